from coughxai.cli import main

raise SystemExit(main())
