import os

# Keep BLAS single-threaded inside test workers; replicate-level parallelism
# already uses both cores and oversubscription slows the suite down.
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")
