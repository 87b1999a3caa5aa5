from .report_generator import *