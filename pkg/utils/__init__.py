"""Small helpers shared by the toolkit packages."""
