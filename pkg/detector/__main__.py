from detector.engine.cli import main

main()
