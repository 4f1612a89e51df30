"""
Numerics layer

Pure float64 kernels with no file IO:
- linalg: products, covariances, Pearson correlation, dominant eigenpair
- layers: FC / ReLU / softmax cross-entropy / triplet loss / repression layers
  with analytic backward passes
"""
