# Hidden-variable recurrent fractal interpolation
