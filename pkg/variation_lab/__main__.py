from variation_lab.management import main

if __name__ == "__main__":
    main()
