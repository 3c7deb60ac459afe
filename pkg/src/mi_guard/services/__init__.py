# Attacks, defenses, training and reporting services
