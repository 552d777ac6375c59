#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__version__ = (0, 1, 0)

from .const import *
from .denoiser import *
from .diffusion import *
from .engine import *
from .exception import *
from .pfs import *
from .tensor import *
from .trace import *
