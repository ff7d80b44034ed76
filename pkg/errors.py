#!/usr/bin/env python3
"""
Erreurs angleform
Hiérarchie unique : tout ce que la CLI sait convertir en code de sortie 1
hérite de AngleformError.
"""

from typing import List, Optional


class AngleformError(Exception):
    """Erreur de base du simulateur."""


class CoincidentPoints(AngleformError):
    """Deux points confondus (distance ≤ EPS_DEG)."""


class DegenerateReference(AngleformError):
    """Configuration de référence sans étendue (tous les points confondus)."""


class InvalidSensingGraph(AngleformError):
    """Graphe de perception qui ne respecte pas la structure LFF."""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("invalid sensing graph: " + "; ".join(self.violations))


class DegenerateTarget(AngleformError):
    """Formation cible non fortement non dégénérée."""


class CoincidentLeaders(AngleformError):
    """Leader et premier suiveur confondus."""


class DegenerateMeasurement(AngleformError):
    """Relèvement indéfini pendant une mesure d'angle."""


class InvalidScenario(AngleformError):
    """Scénario incohérent (longueurs, mode, planning, activation)."""


class StepTooLarge(InvalidScenario):
    """Pas d'intégration au-delà de la garde de stabilité."""


class InsufficientData(AngleformError):
    """Pas assez d'échantillons pour ajuster un taux."""


class ParseError(AngleformError):
    """Erreur de syntaxe dans un fichier scénario, positionnée."""

    def __init__(self, message: str, line: int, column: int = 1,
                 path: Optional[str] = None):
        self.message = message
        self.line = line
        self.column = column
        self.path = path
        super().__init__(self.format())

    def format(self) -> str:
        where = f"{self.path}:" if self.path else ""
        return f"{where}{self.line}:{self.column}: {self.message}"


class ScenarioFileError(AngleformError):
    """Ensemble de diagnostics collectés sur un fichier scénario."""

    def __init__(self, diagnostics: List[ParseError]):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(d.format() for d in self.diagnostics))


class ValidationError(AngleformError):
    """Hypothèses violées par un scénario syntaxiquement correct."""

    def __init__(self, violations: List[str]):
        self.violations = list(violations)
        super().__init__("\n".join(self.violations))
