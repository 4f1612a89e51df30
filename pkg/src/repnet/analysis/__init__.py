"""
Analysis layer

Repression diagnostics over a frozen network:
- cca: first canonical correlation between two feature sets
- saliency: occlusion maps of any named feature
"""
