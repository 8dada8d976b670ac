"""Shared fixtures for the normalizer and metrics suites."""

# (raw sign text, expected Title Case fold)
NORMALIZER_CASES = [
    ("RUE DE LA GARE", "Rue de la Gare"),
    ("IMPASSE DE L'EGLISE", "Impasse de l'Eglise"),
    ("rue des lilas", "Rue des Lilas"),
    ("PLACE AU BOIS", "Place au Bois"),
    ("RUE AUX LOUPS", "Rue aux Loups"),
    ("ALLÉE DU MOULIN", "Allée du Moulin"),
    ("RUE PIERRE ET MARIE CURIE", "Rue Pierre et Marie Curie"),
    ("CHEMIN LE LONG", "Chemin le Long"),
    ("AVENUE LES TILLEULS", "Avenue les Tilleuls"),
    ("ROUTE SOUS LE BOIS", "Route sous le Bois"),
    ("QUAI SUR SEINE", "Quai sur Seine"),
    ("RUE D'ANJOU", "Rue d'Anjou"),
    ("rue d'orléans", "Rue d'Orléans"),
    ("L'ÉTOILE", "l'Étoile"),
    ("CHÂTEAU D'EAU", "Château d'Eau"),
    ("ÉGLISE SAINT-PIERRE", "Église Saint-pierre"),
    ("ÎLE DE LA CITÉ", "Île de la Cité"),
    ("éTANG BLEU", "Étang Bleu"),
    ("ÂGE D'OR", "Âge d'Or"),
    ("ÇÀ ET LÀ", "Çà et Là"),
    ("AVENUE ÉMILE ZOLA", "Avenue Émile Zola"),
    ("DE LA GARE", "de la Gare"),
    ("LE HAVRE", "le Havre"),
    ("Rue De La Paix", "Rue de la Paix"),
    ("Rue de la Gare", "Rue de la Gare"),
]

STOP_WORDS_COVERED = {"au", "aux", "de", "des", "du", "et", "la", "le", "les", "sous", "sur"}
