#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"

from .config import *
from .experiment import *
from .metric import *
from .report import *
