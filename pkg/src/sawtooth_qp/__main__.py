from sawtooth_qp.cli import main

raise SystemExit(main())
