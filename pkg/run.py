"""Launch the surgery-spectra command-line driver."""

import sys

from surgery_spectra.app import main


if __name__ == "__main__":
    sys.exit(main())
