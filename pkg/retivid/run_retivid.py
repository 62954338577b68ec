import sys

from retivid.framework import main as runner


def main():
    arguments = sys.argv[1:]
    sys.exit(runner.run(arguments))


if __name__ == "__main__":
    main()
