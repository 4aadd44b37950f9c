"""Joint inference of diffusion networks and infection times."""
