'''
Description:
Author: hikonv contributors
Date: 2022-04-19 02:06:30
LastEditors: hikonv contributors
LastEditTime: 2022-04-19 02:06:30
'''
__version__ = '0.1.0'
