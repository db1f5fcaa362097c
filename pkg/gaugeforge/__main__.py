from gaugeforge.main import main
import sys

sys.exit(main())
