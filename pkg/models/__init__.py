from .schemas import *
