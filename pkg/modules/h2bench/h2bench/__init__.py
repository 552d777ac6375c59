#!/usr/bin/env python3
# encoding: utf-8

__author__ = "h2cache developers"
__version__ = (0, 1, 0)
__license__ = "MIT <https://opensource.org/license/mit>"
