"""DistSubmod: distributed submodular maximization under partition matroid constraints."""
