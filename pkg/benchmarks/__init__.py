"""Problem generators and timing runners for the fdxsic kernels."""
