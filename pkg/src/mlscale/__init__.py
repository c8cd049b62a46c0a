"""Matrix completion, NMF, hashed text classification and MapReduce k-means."""
