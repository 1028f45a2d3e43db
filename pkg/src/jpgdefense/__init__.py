"""FGSM adversarial images, JPEG recompression as a defense, and the JPG-noise control."""
__version__ = "0.1.0"
