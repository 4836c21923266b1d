from cellsentry.cli import main

main()
