"""
Run history for the NEFEM flow solver.
Tracks slabs, Newton iterations, dt halvings and output files across runs.
"""
from collections import defaultdict
from typing import Dict, List, Tuple


class RunHistory:
    """Counters and per-case statistics gathered during a CLI session."""

    def __init__(self):
        self.total_slabs = 0
        self.total_newton = 0
        self.dt_halvings = 0
        self.failures = 0
        self.slabs_per_case = defaultdict(int)
        self.newton_per_case = defaultdict(int)
        self.outputs = defaultdict(int)
        self.final_drag: Dict[str, float] = {}

    def track_slab(self, case: str, newton_iterations: int):
        """Track one converged slab."""
        self.total_slabs += 1
        self.total_newton += newton_iterations
        self.slabs_per_case[case] += 1
        self.newton_per_case[case] += newton_iterations

    def track_halvings(self, count: int = 1):
        self.dt_halvings += count

    def track_failure(self):
        self.failures += 1

    def track_output(self, kind: str):
        """Track a written file by kind (vtk, wall, forces, summary)."""
        self.outputs[kind] += 1

    def track_drag(self, case: str, cd: float):
        self.final_drag[case] = cd

    def mean_newton(self, case: str) -> float:
        slabs = self.slabs_per_case.get(case, 0)
        return self.newton_per_case[case] / slabs if slabs else 0.0

    def get_busiest_cases(self, limit: int = 5) -> List[Tuple[str, int]]:
        """Cases ordered by slab count."""
        return sorted(self.slabs_per_case.items(), key=lambda x: x[1], reverse=True)[:limit]

    def get_stats_summary(self) -> str:
        """Generate a formatted run summary."""
        text = (
            "📊 Run Statistics\n"
            f"🧱 Total slabs: {self.total_slabs}\n"
            f"🔁 Total Newton iterations: {self.total_newton}\n"
            f"✂️ dt halvings: {self.dt_halvings}\n"
            f"❌ Failed slabs: {self.failures}\n"
            "Cases:\n"
        )
        cases = self.get_busiest_cases()
        if cases:
            for i, (case, count) in enumerate(cases, 1):
                drag = self.final_drag.get(case)
                drag_text = f", C_D {drag:.6f}" if drag is not None else ""
                text += f"{i}. {case}: {count} slabs, {self.mean_newton(case):.2f} newton/slab{drag_text}\n"
        else:
            text += "No data yet\n"
        text += "Outputs:\n"
        if self.outputs:
            for kind, count in sorted(self.outputs.items()):
                text += f"• {kind}: {count} files\n"
        else:
            text += "No data yet\n"
        return text


# Global run history instance
history = RunHistory()
