"""Independent reference implementations used to cross-check the package."""
