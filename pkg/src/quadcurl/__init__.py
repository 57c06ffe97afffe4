"""Mixed interior-penalty finite elements for the 3D quad-curl problem."""
