from .pce import PCESurrogate, fit_pce, pce_sobol
from .report import SobolIndexReport
from .swelm import SWELMSurrogate, fit_swelm, swelm_sobol


def load_surrogate(doc: dict):
    """Rebuild a surrogate from its ``to_dict`` document."""
    kind = doc.get("kind")
    if kind == "pce":
        return PCESurrogate.from_dict(doc)
    if kind == "swelm":
        return SWELMSurrogate.from_dict(doc)
    raise ValueError(f"unknown surrogate kind {kind!r}")
