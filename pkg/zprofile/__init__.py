# Z-profile Module
