"""Graph-regularized Bayesian signal detection for vaccine adverse events.

Fits per-event logistic models with spike-and-slab selection and a
network prior built from an adverse-event ontology, using a Polya-Gamma
Gibbs sampler.  Subpackages: ``ingest`` (report files to binomial cells),
``ontology`` (term graph and correlation structure), ``pg`` (Polya-Gamma
kernels), ``engine`` (the sampler), ``select`` (DIC tuning), ``posterior``
(summaries, FDR, negative controls, enrichment), ``simgen`` (synthetic
studies), ``cli`` (command line).
"""

__version__ = "0.1.0"
