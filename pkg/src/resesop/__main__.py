"""Entry point for python -m resesop."""

from .experiment_cli import main

if __name__ == '__main__':
    raise SystemExit(main())
