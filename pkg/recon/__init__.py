# Recon Module
