#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
Graph assumption verification module.

This module checks that a communication graph is strongly connected and
weight-balanced, the two properties the distributed dynamics rely on, and
cross-checks them against their spectral characterizations.
"""

import logging
from typing import Dict

from core.domain.entities import WeightedDigraph
from core.graph import (
    PSD_ATOL,
    is_strongly_connected,
    is_weight_balanced,
    spectral_diagnostics,
)

logger = logging.getLogger(__name__)


class AssumptionVerifier:
    """Verifies the structural assumptions on a communication graph."""

    def __init__(self, graph: WeightedDigraph):
        """Initialize the AssumptionVerifier.

        Args:
            graph (WeightedDigraph): The graph to check
        """
        self.graph = graph

    def verify(self) -> Dict[str, object]:
        """Evaluate both predicates and the spectral diagnostics.

        Returns:
            Dict[str, object]: Report with "balanced", "strongly_connected",
            "assumptions_hold" and the "spectral" diagnostics
        """
        balanced = is_weight_balanced(self.graph)
        connected = is_strongly_connected(self.graph)
        diagnostics = spectral_diagnostics(self.graph)
        psd = diagnostics.min_symmetric_eigenvalue >= -PSD_ATOL
        if psd != balanced:
            logger.warning(
                "Degree balance test (%s) disagrees with L + L^T PSD test (min eigenvalue %.3e)",
                balanced, diagnostics.min_symmetric_eigenvalue
            )
        logger.debug("Graph check: balanced=%s strongly_connected=%s", balanced, connected)
        return {
            "n_nodes": self.graph.n_nodes,
            "balanced": balanced,
            "strongly_connected": connected,
            "assumptions_hold": balanced and connected,
            "spectral": {
                "zero_eigenvalue_multiplicity": diagnostics.zero_eigenvalue_multiplicity,
                "simple_zero_eigenvalue": diagnostics.zero_eigenvalue_multiplicity == 1,
                "min_symmetric_eigenvalue": diagnostics.min_symmetric_eigenvalue,
                "symmetric_part_psd": psd,
                "max_row_sum": diagnostics.max_row_sum,
                "max_column_sum": diagnostics.max_column_sum,
                "undirected": diagnostics.undirected,
            },
        }

    def display_results(self, results: Dict[str, object]) -> None:
        """Display verification results with colored output.

        Args:
            results (Dict[str, object]): Report returned by verify()
        """
        GREEN = "\033[92m"  # pylint: disable=C0103
        RED = "\033[91m"    # pylint: disable=C0103
        RESET = "\033[0m"   # pylint: disable=C0103

        print("\nGraph check results:")
        for key in ("balanced", "strongly_connected"):
            status = (
                f"{GREEN}PASS{RESET}"
                if results[key]
                else f"{RED}FAIL{RESET}"
            )
            print(f"  {key.replace('_', ' ')}: {status}")

        spectral = results["spectral"]
        print(f"  zero eigenvalue multiplicity: {spectral['zero_eigenvalue_multiplicity']}")
        print(f"  min eigenvalue of L + L^T: {spectral['min_symmetric_eigenvalue']:.6g}")
        print(f"  undirected: {spectral['undirected']}")
        logger.info("Graph check complete: assumptions_hold=%s", results["assumptions_hold"])
