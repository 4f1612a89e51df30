"""
Retrieval layer

- gallery: embedded sample container, Parquet IO, dataset embedding
- index: (color, model) bucket index
- search: linear and bucket search producing ranking lists
- metrics: precision@k, average precision, MAP, precision curves
- queries: query selection (random / tough)
- bench: timing comparison of both search modes, synthetic galleries
"""
