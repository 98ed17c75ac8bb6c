from codedehaze.main import main

main()
