"""Detection delays of the XS rules and the soft-thresholded two-sided LP schemes."""
from _table import main

if __name__ == "__main__":
    main("table3")
