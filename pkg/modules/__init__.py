# presenced library modules
