"""Dataset construction: IDX codec, preprocessing and the five-class split."""
