"""Model builders for the exact, SOC and LPAC formulations."""
from __future__ import annotations

from dataclasses import replace

from ..model import MathModel
from .base import FORMULATIONS, KINDS, ProblemSpec, prepare_network
from .evaluators import ac_flow_exact, converter_coupling, converter_loss, dc_flow, objective_eval
from .exact import ExactBuilder
from .lpac import LpacBuilder, cos_envelope, cos_knots
from .soc import SocBuilder

_BUILDERS = {"exact": ExactBuilder, "soc": SocBuilder, "lpac": LpacBuilder}


def build_model(net, spec: ProblemSpec) -> MathModel:
    """Build the model of ``spec`` on ``net`` (a Network or AugmentedNetwork).

    Busbar splitting and OTS tagging are applied here when the ProblemSpec asks
    for them and ``net`` is a plain Network.
    """
    prepared, aug = prepare_network(net, spec)
    model = _BUILDERS[spec.formulation](prepared, spec).build()
    model.meta["aug"] = aug
    model.meta["source"] = net
    return model


def soc_lift(model: MathModel) -> MathModel:
    """SOC relaxation of an exact model, with identically named binaries."""
    spec = replace(model.meta["spec"], formulation="soc", switch_model="bigm")
    lifted = SocBuilder(model.meta["net"], spec).build()
    lifted.meta["aug"] = model.meta.get("aug")
    lifted.meta["source"] = model.meta.get("source")
    return lifted


def lpac_build(net, spec: ProblemSpec) -> MathModel:
    if spec.formulation != "lpac":
        raise ValueError("lpac_build needs a spec with formulation 'lpac'")
    return build_model(net, spec)


__all__ = [
    "FORMULATIONS", "KINDS", "ProblemSpec", "build_model", "soc_lift", "lpac_build",
    "ac_flow_exact", "dc_flow", "converter_coupling", "converter_loss", "objective_eval",
    "cos_knots", "cos_envelope",
]
