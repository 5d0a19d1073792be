"""
Description:
Author: hikonv contributors
Date: 2022-04-21 04:58:10
LastEditors: hikonv contributors
LastEditTime: 2022-04-21 04:58:10
"""
