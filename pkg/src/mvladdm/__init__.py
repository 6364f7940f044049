"""Multi-view latent-attention dynamic discriminative model."""
