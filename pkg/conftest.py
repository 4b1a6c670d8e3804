import sys
sys.path.append('src')
