from .file_exporters import *
from .checkpoint_format import *
