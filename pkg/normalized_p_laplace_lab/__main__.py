import sys

from normalized_p_laplace_lab.cli import main

sys.exit(main())
