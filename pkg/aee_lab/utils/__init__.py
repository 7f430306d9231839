# Artifact plumbing: fingerprints, CSV emission and noise-table files
