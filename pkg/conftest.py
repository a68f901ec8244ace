# Puts the project root on sys.path so tests import packages the way main.py does.
