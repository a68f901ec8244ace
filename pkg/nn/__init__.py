"""
Minimal numpy network kit shared by the pixel classifier and the z-profile models.
"""
