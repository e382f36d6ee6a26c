from launchline.cli import main

main()
