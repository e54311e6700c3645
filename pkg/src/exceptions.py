class ConfigException(Exception):
    def __init__(self, message):
        super().__init__(message)
        self.message = message

    def __str__(self):
        return f"ConfigException: {self.message}"


class DivergenceException(Exception):
    def __init__(self, solver, step, message=None):
        self.solver = solver
        self.step = step
        self.message = message or f"{solver}: non-finite value at step {step}"
        super().__init__(self.message)

    def __str__(self):
        return f"DivergenceException: {self.message}"


class OracleToleranceException(Exception):
    def __init__(self, deviation, tolerance):
        self.deviation = deviation
        self.tolerance = tolerance
        self.message = (
            f"kernel path deviates from the oracle by {deviation:.4g} "
            f"(tolerance {tolerance:.4g})"
        )
        super().__init__(self.message)

    def __str__(self):
        return f"OracleToleranceException: {self.message}"
