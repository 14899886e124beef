"""surfgauge: flat-connection machinery for K-surfaces and isothermic surfaces.

Submodules
----------
lightcone   metric algebra for R^{4,1} and C^3, Gamma maps, cross-ratios
grids       rectangular coordinate grids and sampled fields
ksurface    sine-Gordon solver and constant-curvature surface reconstruction
loopgauge   loops of flat connections, Sym formula, Backlund dressing
isothermic  retraction forms, Darboux and T-transforms, Bianchi cubes
discrete    quad-graph gauge theory for discrete isothermic surfaces
scenarios   reproducible verification scenarios behind the CLI
"""

__version__ = "0.1.0"
