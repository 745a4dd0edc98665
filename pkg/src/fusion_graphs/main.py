import sys

from fusion_graphs.cli import main

if __name__ == '__main__':
    sys.exit(main())
