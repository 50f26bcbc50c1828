from dephydro.cli import main

raise SystemExit(main())
