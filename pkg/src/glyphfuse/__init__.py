"""Few-shot glyph style transfer with codebook attention, on numpy."""
