"""Numerical checks for Dirichlet forms and Markov semigroups on finite-dimensional C*-algebras."""

__version__ = "0.1.0"

from .algebra import Algebra, Element  # noqa: E402
from .forms import Form, dirichlet_check  # noqa: E402
from .semigroups import SuperOperator, triangle  # noqa: E402
from .verdict import Verdict  # noqa: E402

__all__ = ["Algebra", "Element", "Form", "SuperOperator", "Verdict", "dirichlet_check",
           "triangle", "__version__"]
