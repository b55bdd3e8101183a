"""Coefficient families, explicit c-bad constructions and the expression language"""

from .expression import Expression, parse_expression
from .constructions import (
    DensityWitness,
    Prop31Construction,
    Step1Result,
    Step2Result,
    a_s_family,
    limit_measure,
    max_admissible_s,
    perturb_to_bad,
    prop31_bad,
    thm16_step1,
    thm16_step2,
)
from .specs import CoefficientSpec, closed_form_measure, construct, parse_variant, realize
