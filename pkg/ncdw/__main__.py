from ncdw.cli import main

main()
