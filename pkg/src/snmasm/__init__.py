"""Multilevel Schwarz preconditioning for SN k-eigenvalue transport solves."""
