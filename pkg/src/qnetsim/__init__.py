"""qnetsim: control plane plus deterministic simulator for metro-scale
entanglement-distribution networks.

The package is organized around the life of an entanglement request:

- :mod:`qnetsim.topology` models the optical network as an undirected
  multigraph with wavelength-channelized fiber links.
- :mod:`qnetsim.rwa` routes requests onto lightpaths (shortest path plus
  first-feasible wavelength, with explicit blocking).
- :mod:`qnetsim.photonics` is the phenomenological physical layer: loss,
  Raman noise, coincidence statistics, visibility.
- :mod:`qnetsim.calibration` simulates the calibration procedures the
  control plane schedules (polarization alignment, time-bin frames,
  HOM delay scans, correlation-delay search).
- :mod:`qnetsim.controlplane` is the controller, the SDN agent, and the
  simulated node agents exchanging protocol messages over a bus.
- :mod:`qnetsim.simkernel` is the deterministic discrete-event engine
  everything runs on.
- :mod:`qnetsim.gateway` is the operator surface: scenario files, CLI,
  HTTP/JSON API with event streaming, and results persistence.
"""

__version__ = "0.1.0"
