from .base import Ec2dProblem, ManufacturedCase, ProblemError, RdProblem
from .reaction_diffusion import gradient_average, iterative_undersolve, solve_rd
from .eddy_current import solve_ec2d
from .dispatch import solve_pair
from .registry import (
    CASES,
    SCENARIOS,
    consistency_residual,
    ec_ex4,
    manufactured_registry,
    rd_linear_inhomo,
    rd_poly_2d,
    rd_robin,
    scenario_ex6,
    scenario_ex7,
    scenario_ex8,
)
from .case_file import CaseCard, CaseFileError, load_case_card, parse_case_card

__all__ = [
    "RdProblem",
    "Ec2dProblem",
    "ManufacturedCase",
    "ProblemError",
    "solve_rd",
    "solve_ec2d",
    "solve_pair",
    "iterative_undersolve",
    "gradient_average",
    "CASES",
    "SCENARIOS",
    "manufactured_registry",
    "consistency_residual",
    "rd_poly_2d",
    "ec_ex4",
    "rd_linear_inhomo",
    "rd_robin",
    "scenario_ex6",
    "scenario_ex7",
    "scenario_ex8",
    "CaseCard",
    "CaseFileError",
    "parse_case_card",
    "load_case_card",
]
