import sys

from ncdw.cli import dispatch

# Run the command line; exit code 0 success, 1 usage, 2 validation, 3 storage
sys.exit(dispatch(sys.argv[1:]))
