"""Logging and error-log helpers"""
