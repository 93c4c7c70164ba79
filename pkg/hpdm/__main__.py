"""Allow running as python -m hpdm."""

from .cli import main

if __name__ == "__main__":
    main()
