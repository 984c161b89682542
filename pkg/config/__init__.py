# config package