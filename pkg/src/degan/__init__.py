"""DE-GAN pipeline: VAE-shaped noise for adversarial image generation, plus analysis tools."""
__version__ = "0.1.0"
