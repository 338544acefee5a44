from variation_lab.conf import configure

configure()
