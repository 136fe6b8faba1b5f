"""Detection delays of the twelve CUSUM-based schemes (K=100, mu=1, ARL 5000)."""
from _table import main

if __name__ == "__main__":
    main("table1")
