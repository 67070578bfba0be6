from .sequence import *
from .metrics import *
from .ope import *
