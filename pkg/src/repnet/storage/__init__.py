"""
Storage layer

Byte formats and persistence:
- schema: gallery Parquet schema and CSV column layouts
- features: RPNF feature matrices (f32)
- manifest: dataset directories (manifest.csv + features.rpnf + dataset.yaml)
- checkpoint: RPNC parameter files with CRC-32 trailer
- writers: staged atomic writes for every artifact
"""
