import sys

from sprite_imputer.main import main

if __name__ == "__main__":
    sys.exit(main())
