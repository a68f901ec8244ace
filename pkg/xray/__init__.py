# X-ray Module
