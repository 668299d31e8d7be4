from adsbench.cli import main

raise SystemExit(main())
