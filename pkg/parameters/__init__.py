"""
Parameter certification
Checks the critical orbits of one parameter at a finite horizon and scans
parameter intervals for the certified share near 0
"""

from .parameter_lab import CertificationReport, ScanResult, certify, scan, scan_grid

__all__ = ['CertificationReport', 'ScanResult', 'certify', 'scan', 'scan_grid']
