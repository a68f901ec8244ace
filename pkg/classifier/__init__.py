# Classifier Module
