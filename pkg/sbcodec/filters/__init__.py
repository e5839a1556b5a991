"""In-loop filters applied after all SCUs of a frame are reconstructed: SAO, then ALF."""
