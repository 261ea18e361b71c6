"""Two-photon Rydberg excitation of a single atom: dynamics, noise and fits."""
